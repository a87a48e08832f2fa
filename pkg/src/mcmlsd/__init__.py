"""Line segment detection by Markov-chain labelling of probabilistic Hough lines."""

from .config import Config, ConfigError, load_config
from .core import GrayImage, Line, LineSegment, Point2
from .detector import detect_edge_map, detect_image
from .edges import EdgeDetectParams, EdgeMap, detect_edges, load_edge_map, save_edge_map
from .evaluation import SegmentSet, compute_curves, evaluate_at_k
from .hough import HoughParams, accumulate, detect_lines
from .markov import DetectorConfig, RankedSegment, default_model, load_model, run_mcmlsd

__version__ = "0.1.0"
