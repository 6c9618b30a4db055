#!/usr/bin/env python3
import sys
import argparse
import traceback
from datetime import datetime
from pathlib import Path

# Minimum Python version check
if sys.version_info < (3, 9):
    print("❌ Error: Python 3.9 or higher is required", file=sys.stderr)
    print(f"   Current version: {sys.version}", file=sys.stderr)
    sys.exit(1)


def setup_paths():
    """Put the repository root on the import path"""
    BASE_DIR = Path(__file__).resolve().parent
    if str(BASE_DIR) not in sys.path:
        sys.path.insert(0, str(BASE_DIR))
    return BASE_DIR


def setup_error_handling(workspace: Path):
    """Write uncaught exceptions to <workspace>/logs/error_<timestamp>.log"""
    def handle_exception(exc_type, exc_value, exc_traceback):
        if issubclass(exc_type, KeyboardInterrupt):
            print("\n🛑 Interrupted by user", file=sys.stderr)
            sys.__excepthook__(exc_type, exc_value, exc_traceback)
            return

        error_msg = "".join(traceback.format_exception(exc_type, exc_value, exc_traceback))
        print("\n💥 Uncaught exception occurred:", file=sys.stderr)
        print(error_msg, file=sys.stderr)

        try:
            log_dir = workspace / "logs"
            log_dir.mkdir(parents=True, exist_ok=True)
            timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
            log_file = log_dir / f"error_{timestamp}.log"

            with open(log_file, 'w', encoding='utf-8') as f:
                f.write("fleetcheck Error Log\n")
                f.write(f"Timestamp: {datetime.now().isoformat()}\n")
                f.write(f"Python: {sys.version}\n")
                f.write(f"Platform: {sys.platform}\n")
                f.write(f"Arguments: {sys.argv[1:]}\n\n")
                f.write(error_msg)

            print(f"📝 Error logged to: {log_file}", file=sys.stderr)
        except OSError as log_error:
            print(f"⚠️ Failed to write error log: {log_error}", file=sys.stderr)

    sys.excepthook = handle_exception


def parse_arguments(argv):
    """Pre-parse the global flags main itself needs"""
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument('--workspace', default=".")
    parser.add_argument('--check-deps', action='store_true')
    parser.add_argument('--debug', action='store_true')
    args, _ = parser.parse_known_args(argv)
    return args


def handle_special_modes(args):
    if args.check_deps:
        from core.cli import check_dependencies

        sys.exit(check_dependencies())


def show_startup_info(args):
    if not args.debug:
        return
    print("🚀 fleetcheck", file=sys.stderr)
    print("=" * 50, file=sys.stderr)
    print(f"Python: {sys.version.split()[0]}", file=sys.stderr)
    print(f"Platform: {sys.platform}", file=sys.stderr)
    print(f"Script path: {Path(__file__).parent}", file=sys.stderr)
    print(f"Working directory: {Path.cwd()}", file=sys.stderr)
    print(f"Workspace: {Path(args.workspace).resolve()}", file=sys.stderr)
    print(file=sys.stderr)


def main():
    """Command line entry point"""
    setup_paths()
    argv = sys.argv[1:]
    args = parse_arguments(argv)

    setup_error_handling(Path(args.workspace).resolve())
    show_startup_info(args)
    handle_special_modes(args)

    from core.cli import run

    sys.exit(run(argv))


if __name__ == "__main__":
    main()
