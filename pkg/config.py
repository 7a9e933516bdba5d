import os
import logging
from dotenv import load_dotenv

# --- 1. Calculate Project Root Path ---
config_dir = os.path.dirname(os.path.abspath(__file__))
project_root_resolved = os.path.abspath(config_dir)

# --- 2. Load .env File ---
load_dotenv(os.path.join(project_root_resolved, '.env'))

# --- 3. Retrieve Variables ---
SNR_THREADS = max(1, int(os.getenv("SNR_THREADS", "1")))
SNR_LOG_LEVEL = os.getenv("SNR_LOG_LEVEL", "INFO").upper()
SNR_TOLERANCE_FRACTION = float(os.getenv("SNR_TOLERANCE_FRACTION", "0.01"))
SNR_MAX_OUTER_ITER = int(os.getenv("SNR_MAX_OUTER_ITER", "200"))
SNR_TOL = float(os.getenv("SNR_TOL", "1e-6"))

DATA_DIR = os.path.join(project_root_resolved, "data")

# --- 4. Logging ---
_LOG_FORMAT = "[%(levelname)s] %(message)s"


def get_logger(name: str) -> logging.Logger:
    """
    Module logger with the console tags used across the tool:
    [INFO] ..., [WARNING] ..., [ERROR] ...
    """
    root = logging.getLogger("snr")
    if not root.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(_LOG_FORMAT))
        root.addHandler(handler)
        root.setLevel(SNR_LOG_LEVEL)
    return root.getChild(name)
