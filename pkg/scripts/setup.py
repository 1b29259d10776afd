#!/usr/bin/env python3

import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def print_header(text):
    print(f"\n{'=' * 60}")
    print(f"  {text}")
    print(f"{'=' * 60}\n")


def check_python_version():
    print_header("Checking Python Version")

    version = sys.version_info
    print(f"Python {version.major}.{version.minor}.{version.micro}")
    if version < (3, 9):
        print("❌ Python 3.9 or higher is required!")
        return False

    print("✅ Python version is compatible")
    return True


def install_dependencies():
    print_header("Installing Dependencies")

    try:
        subprocess.check_call([sys.executable, '-m', 'pip', 'install', '-r', str(ROOT / 'requirements.txt')])
        print("\n✅ All dependencies installed successfully")
        return True
    except subprocess.CalledProcessError:
        print("\n❌ Failed to install dependencies")
        return False


def verify_imports():
    print_header("Verifying Imports")

    modules = {
        'numpy': 'NumPy (state vectors, linear algebra)',
        'scipy': 'SciPy (null spaces)',
        'openpyxl': 'openpyxl (Excel export, optional)',
    }

    all_ok = True
    for module_name, description in modules.items():
        try:
            __import__(module_name)
            print(f"✅ {description}")
        except ImportError as e:
            print(f"❌ {description} - {e}")
            all_ok = module_name == 'openpyxl' and all_ok
    return all_ok


def run_test():
    print_header("Validating Bundled Scenarios")

    sys.path.insert(0, str(ROOT))
    try:
        from core.analysis import sync_report
        from core.errors import ScenarioError
        from core.scanner import Scanner
        from core.scenario import bundled_scenarios_dir, parse_scenario

        ok = True
        for path in Scanner().scan_directory(bundled_scenarios_dir()):
            try:
                scenario = parse_scenario(str(path))
                scenario.build_simulation()
                report = sync_report(scenario.network_topology(), scenario.radii(),
                                     scenario.oscillators.lambda_flap)
                print(f"✅ {path.name}: {report.verdict}")
            except ScenarioError as e:
                print(f"❌ {e}")
                ok = False
        return ok

    except Exception as e:
        print(f"❌ Test failed: {e}")
        return False


def main():
    steps = [check_python_version, install_dependencies, verify_imports, run_test]
    for step in steps:
        if not step():
            sys.exit(1)

    print("""
✅ flapwing is ready to use!

Run the bundled flight:
    python main.py simulate assets/scenarios/reference_flight.json --out flight.csv

Check the synchronization condition:
    python main.py analyze-sync assets/scenarios/config_a_sync.json

See docs/QUICKSTART.md for more.
    """)


if __name__ == "__main__":
    try:
        main()
    except KeyboardInterrupt:
        print("\n\n⚠️  Setup interrupted by user.")
        sys.exit(1)
    except Exception as e:
        print(f"\n\n❌ Setup failed: {e}")
        sys.exit(1)
