import os

from dotenv import load_dotenv

load_dotenv()

RESOURCE_DIR = os.getenv("FAIR_DUEL_RESOURCE_DIR", "shared_files")
LOG_LEVEL = os.getenv("FAIR_DUEL_LOG_LEVEL", "INFO").upper()
DEFAULT_JOBS = int(os.getenv("FAIR_DUEL_JOBS", "1"))
DEFAULT_CHECKPOINT_STRIDE = int(os.getenv("FAIR_DUEL_CHECKPOINT_STRIDE", "100"))
FW_MAX_ITER = int(os.getenv("FAIR_DUEL_FW_MAX_ITER", "2000"))
FW_GAP_TOL = float(os.getenv("FAIR_DUEL_FW_GAP_TOL", "1e-8"))

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"
