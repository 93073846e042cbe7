"""
A small benchmark grid, its heatmaps and the best model per signal
==================================================================

The full study trains every (variant, signal, P, H) combination. Here the
grid is cut to two signals, two patch lengths and two horizons with a short
training budget so it runs in seconds.
"""

from pathlib import Path

from compactformer import bench
from compactformer.artifacts import HeatmapArtifact, heatmap_svg, value_range, write_atomic

spec = bench.GridSpec(signals=("sine", "poly2"), patch_lengths=(8, 16), horizons=(2, 8), epochs=20)
results = bench.run_grid(spec)
print(f"{len(results)} cells trained, {sum(not r.ok for r in results)} failed")

agg = bench.aggregate(results)
print()
print(bench.aggregate_csv(agg))

print(bench.best_table_csv(bench.best_per_signal(results)))

# one heatmap panel per variant, sharing a color scale
maps = {var: agg.heatmap("patchtst", var) for var in spec.variants}
vmin, vmax = value_range(maps.values())
panels = [HeatmapArtifact(m, agg.patch_lengths, agg.horizons, vmin, vmax, var) for var, m in maps.items()]
out = Path("demo_grid.svg")
write_atomic(out, heatmap_svg(panels, "patchtst mean RMSE, clean"))
print(f"heatmap written to {out.resolve()}")
