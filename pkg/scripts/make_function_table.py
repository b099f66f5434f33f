#!/usr/bin/env python3
"""
Write an x,f function table from a named curve preset

Usage:
    python3 scripts/make_function_table.py <preset name or id> <output.csv> [samples]
"""
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from curves import function_from_preset, write_function_table
from forge import find_preset

if len(sys.argv) < 3:
    print(__doc__.strip())
    sys.exit(64)

preset = find_preset(sys.argv[1])
samples = int(sys.argv[3]) if len(sys.argv) > 3 else 256

f = function_from_preset(preset, samples=samples)
write_function_table(f, Path(sys.argv[2]))

print(f"✓ Wrote {samples} samples of {preset['name']} to {sys.argv[2]}")
print(f"✓ Domain [{f.start:g}, {f.stop:g}], slopes at the ends {f.slope_start:.3g} / {f.slope_end:.3g}")
if not f.periodic_compatible:
    print("→ End slopes differ: the curve cannot be extended periodically")
