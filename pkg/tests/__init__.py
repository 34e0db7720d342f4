"""
Test package for EnKBF-NMPC.
Contains unit tests and small end-to-end runs of the experiment harness.
"""

import sys
from pathlib import Path

# Add the repository root to Python path for testing
repo_dir = Path(__file__).parent.parent
sys.path.insert(0, str(repo_dir))
