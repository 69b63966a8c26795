#!/usr/bin/env python3
"""
Run individual code quality checks.
Usage: python run_quality_checks.py [black|black-fix|flake8|mypy|bandit|all]
"""

import sys
import subprocess
from pathlib import Path

project_root = Path(__file__).parent
PACKAGE = "ehmac"


def run_command(args, description):
    """Run a command and return success status."""
    print(f"🔍 {description}...")
    try:
        result = subprocess.run(args, capture_output=True, text=True, cwd=project_root)  # nosec B603
    except FileNotFoundError as e:
        print(f"❌ Error running {description}: {e}")
        return False
    if result.returncode == 0:
        print(f"✅ {description} passed")
        if result.stdout:
            print(result.stdout)
        return True
    print(f"❌ {description} failed")
    if result.stdout:
        print("STDOUT:", result.stdout)
    if result.stderr:
        print("STDERR:", result.stderr)
    return False


def run_black_check():
    return run_command(["black", "--check", "--line-length", "110", PACKAGE], "Black code formatting check")


def run_black_format():
    return run_command(["black", "--line-length", "110", PACKAGE], "Black code formatting (fix)")


def run_flake8_check():
    return run_command(["flake8", "--max-line-length", "110", PACKAGE], "Flake8 lint")


def run_mypy_check():
    return run_command(["mypy", PACKAGE, "--ignore-missing-imports"], "MyPy type checking")


def run_bandit_check():
    return run_command(["bandit", "-q", "-r", PACKAGE], "Bandit security check")


CHECKS = {
    "black": run_black_check,
    "black-fix": run_black_format,
    "flake8": run_flake8_check,
    "mypy": run_mypy_check,
    "bandit": run_bandit_check,
}


def run_all_checks():
    """Run all quality checks except the formatter."""
    print("🔍 Running All Code Quality Checks...")
    print("=" * 50)
    names = ["black", "flake8", "mypy", "bandit"]
    passed = sum(1 for name in names if CHECKS[name]())
    print("=" * 50)
    print(f"📊 Checks Passed: {passed}/{len(names)}")
    return 0 if passed == len(names) else 1


def main():
    """Main function."""
    if len(sys.argv) < 2:
        print(__doc__.strip())
        return 1
    command = sys.argv[1].lower()
    if command == "all":
        return run_all_checks()
    if command not in CHECKS:
        print(f"Unknown command: {command}")
        return 1
    return 0 if CHECKS[command]() else 1


if __name__ == "__main__":
    sys.exit(main())
