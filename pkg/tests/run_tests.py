#!/usr/bin/env python3
"""
Test runner script for the infoseek simulator.
"""
import subprocess
import sys
import os


def main():
    """Run all infoseek tests."""
    # Get the project root directory
    project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

    # Test files to run, lowest layer first
    test_files = [
        "tests/test_core.py",
        "tests/test_models.py",
        "tests/test_particles.py",
        "tests/test_netsim.py",
        "tests/test_estimation.py",
        "tests/test_control.py",
        "tests/test_config_schema.py",
        "tests/test_preset_validation.py",
        "tests/test_configuration_loading.py",
        "tests/test_argument_parsing.py",
        "tests/test_scenario.py",
    ]

    print("Running infoseek Python tests...")
    print("=" * 50)

    # Check if pytest is available
    try:
        subprocess.run(
            [sys.executable, "-c", "import pytest"], check=True, capture_output=True
        )
    except (subprocess.CalledProcessError, FileNotFoundError):
        print("ERROR: pytest not found. Please install the requirements:")
        print("  pip install -r requirements.txt")
        return 1

    # Run the tests
    cmd = [sys.executable, "-m", "pytest"] + test_files + ["-v"] + sys.argv[1:]

    try:
        result = subprocess.run(cmd, cwd=project_root)
        return result.returncode
    except KeyboardInterrupt:
        print("\nTests interrupted by user")
        return 1
    except Exception as e:
        print(f"Error running tests: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
