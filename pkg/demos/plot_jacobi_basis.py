"""
Jacobi polynomial bases
=======================

Every KAN edge is a weighted sum of Jacobi polynomials evaluated on a
tanh-squashed input. The two shape parameters move the weight of the basis
towards the ends or the middle of [-1, 1].
"""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from pikan.jacobi import CHEBYSHEV_FIRST, LEGENDRE, JacobiParams, eval_basis

out = os.environ.get("PIKAN_DEMO_OUT", "demo_output")
os.makedirs(out, exist_ok=True)

z = np.linspace(-1, 1, 400)

# a few members of the family, up to degree 4
families = {
    "Legendre (0, 0)": JacobiParams(LEGENDRE.alpha, LEGENDRE.beta, 4),
    "Chebyshev (-1/2, -1/2)": JacobiParams(CHEBYSHEV_FIRST.alpha, CHEBYSHEV_FIRST.beta, 4),
    "(1, 2)": JacobiParams(1.0, 2.0, 4),
}

fig, axes = plt.subplots(1, len(families), figsize=(12, 3.5), sharey=False)
for ax, (label, params) in zip(axes, families.items()):
    basis = eval_basis(z, params)
    for n in range(params.n_basis):
        ax.plot(z, basis[:, n], label=f"n={n}")
    ax.set_title(label)
    ax.set_xlabel("z")
axes[0].legend(fontsize=7)
fig.tight_layout()
fig.savefig(os.path.join(out, "jacobi_basis.png"), dpi=120)

# the squashing keeps arbitrarily large activations inside the basis domain
x = np.array([-1e3, -2.0, 0.0, 2.0, 1e3])
print("tanh(x):", np.tanh(x))
print("degree-2 Chebyshev basis at tanh(x):")
print(eval_basis(np.tanh(x), CHEBYSHEV_FIRST))
