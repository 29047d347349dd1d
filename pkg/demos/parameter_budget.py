"""
Parameter budgets
=================

Widths scale with a factor ``ns``; KAN layers multiply each edge by the
number of basis functions. This script lists the sizes of the five variants
and the per-layer breakdown of the half-width KAN.
"""

from pikan.jacobi import JacobiParams
from pikan.network import VARIANTS, NetworkConfig, param_breakdown, total_param_count

for degree in range(2, 7):
    cfg = NetworkConfig.uniform("full_kan", 0.5, jacobi=JacobiParams(-0.5, -0.5, degree))
    print(f"full_kan ns=0.5 degree {degree}: {total_param_count(cfg):>9,}")

print()
for variant in VARIANTS:
    print(f"{variant:<24} ns=0.5: {total_param_count(NetworkConfig.uniform(variant, 0.5)):>9,}")
print(f"{'full_mlp':<24} ns=0.85: {total_param_count(NetworkConfig.uniform('full_mlp', 0.85)):>8,}")

print()
for row in param_breakdown(NetworkConfig.uniform("full_kan", 0.5)):
    print(f"{row['stage']:<8} {row['kind']} {row['d_input']:>4} -> {row['d_output']:<4} {row['total']:>8,}")
