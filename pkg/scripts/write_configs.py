"""Regenerate configs/*.toml from the built-in benchmark definitions."""

from pathlib import Path

from trsearch.benchmarks import BENCHMARKS, benchmark_config

out = Path(__file__).resolve().parent.parent / "configs"
out.mkdir(exist_ok=True)
for name in BENCHMARKS:
    (out / f"{name}.toml").write_text(benchmark_config(name))
    print(out / f"{name}.toml")
