"""
Example-Script: store a number in a soliton train and read it back, configured by environment variables
"""
import os
import sys
from pathlib import Path

# Add project root to Python path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from dotenv import load_dotenv
from solitrain.config import configure_logging, load_run_config, load_settings, SimulationConfig
from solitrain.errors import SolitrainError
from solitrain.services.calculator import compile_plan, run_plan
from solitrain.services.calibration import calibrate
from solitrain.storage.backends import create_table_backend

load_dotenv()


def main():
    # configuration from environment variables
    settings = load_settings()
    configure_logging(settings.log_level)

    config_path = os.getenv("SOLITON_RUN_CONFIG")
    value = float(os.getenv("SOLITON_EXAMPLE_VALUE", "1.0"))
    s_values = [float(s) for s in os.getenv("SOLITON_EXAMPLE_S_LIST", "2.2,2.6,3.0,3.4,3.8,4.2").split(",")]

    simulation = load_run_config(config_path).simulation if config_path else SimulationConfig()
    backend = create_table_backend(table_dir=str(settings.table_dir))
    table_name = "example_table_r.csv"

    print(f"Storing a={value} (config fingerprint {simulation.fingerprint()[:12]}...)")
    print(f"Table directory: {settings.table_dir}, max workers: {settings.max_workers}\n")

    try:
        if table_name in backend.list_tables():
            table = backend.load_table(table_name, expected_fingerprint=simulation.fingerprint(),
                                       strict=settings.strict_fingerprint)
            print(f"⊘ Reusing calibration table {table_name}")
        else:
            table = calibrate(s_values, "r", simulation, max_workers=settings.max_workers)
            backend.save_table(table, table_name)

        plan = compile_plan("store", [value], crit=simulation.crit)
        result = run_plan(plan, table, simulation, strict=settings.strict_fingerprint)

        if result.decoded is None:
            print(f"\n✗ Could not decode f={result.f_measured.f:.4f}: {result.diagnostics}")
            return
        print(f"\n✓ Stored {value}, measured f={result.f_measured.f:.4f}, read back {result.decoded:.4f}")

    except SolitrainError as e:
        print(f"\n✗ Error: {e}")


if __name__ == "__main__":
    main()
