import sys
from pathlib import Path

from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

# wall-clock deadlines make property tests flaky on a loaded single-core box
settings.register_profile("default", deadline=None)
settings.load_profile("default")
