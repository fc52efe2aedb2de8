"""
Build Script (Project Automation).
Runs Linting, Tests, and the quick Oracle Suite.
"""

import subprocess
import sys


def run_command(command, description):
    print(f"--- Running {description} ---")
    try:
        subprocess.check_call(command, shell=True)
        print(f"✅ {description} Passed.\n")
    except subprocess.CalledProcessError:
        print(f"❌ {description} FAILED.")
        sys.exit(1)


def main():
    print("👷 STARTING BUILD PROCESS...\n")

    # 1. Run Ruff (Linting)
    run_command("ruff check src/ tests/ main.py", "Linter (Ruff)")

    # 2. Run Pytest
    run_command("pytest tests/ -v", "Unit & Integration Tests")

    # 3. Oracle suite (--full adds PDE, Melnikov and tracking checks)
    level = "--full" if "--full" in sys.argv else "--quick"
    run_command(f"{sys.executable} main.py --out results/verify verify {level}", "Oracle Suite")

    print("🎉 BUILD SUCCESSFUL! All oracles hold.")


if __name__ == "__main__":
    main()
