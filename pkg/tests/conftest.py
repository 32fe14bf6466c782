import sys
from pathlib import Path

# helper modules (corpus_tools, generators, fixtures) live next to the tests
sys.path.insert(0, str(Path(__file__).parent))
