import os
import sys

import pytest

# Add the project root directory to sys.path
project_root = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, project_root)

if __name__ == "__main__":
    # Discover and run tests
    args = [os.path.join(project_root, "tests"), "-v"] + sys.argv[1:]
    sys.exit(pytest.main(args))
