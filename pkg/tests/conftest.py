import os
import sys

# make oracles.py / gradsuite.py importable regardless of invocation dir
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
