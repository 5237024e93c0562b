import logging
import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()


class Config:
    TAIL_TOL = os.getenv("FCL_TAIL_TOL", "1e-12")
    NODE_BUDGET = os.getenv("FCL_NODE_BUDGET", "10000000")
    THREADS = os.getenv("FCL_THREADS", "4")
    LOG_LEVEL = os.getenv("FCL_LOG_LEVEL", "INFO")
    OUTPUT_DIR = os.getenv("FCL_OUTPUT_DIR", "out")
    SPHERE_TOL = os.getenv("FCL_SPHERE_TOL", "1e-9")
    TANGENCY_TOL = os.getenv("FCL_TANGENCY_TOL", "1e-9")
    QUAD_TOL = os.getenv("FCL_QUAD_TOL", "1e-10")
    SEAM_TOL = os.getenv("FCL_SEAM_TOL", "1e-6")

    @classmethod
    def tail_tol(cls) -> float:
        return float(cls.TAIL_TOL)

    @classmethod
    def node_budget(cls) -> int:
        return int(float(cls.NODE_BUDGET))

    @classmethod
    def threads(cls) -> int:
        return max(1, int(cls.THREADS))

    @classmethod
    def output_dir(cls) -> Path:
        return Path(cls.OUTPUT_DIR)

    @classmethod
    def log_level(cls) -> int:
        return logging.getLevelName(cls.LOG_LEVEL.upper())

    @classmethod
    def sphere_tol(cls) -> float:
        return float(cls.SPHERE_TOL)

    @classmethod
    def tangency_tol(cls) -> float:
        return float(cls.TANGENCY_TOL)

    @classmethod
    def quad_tol(cls) -> float:
        return float(cls.QUAD_TOL)

    @classmethod
    def seam_tol(cls) -> float:
        return float(cls.SEAM_TOL)
