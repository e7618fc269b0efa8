"""A ridge with crossings: ring plus two diameters.

The ``sun_cross`` model mixes a ring with two blurred segments through the
centre, so its ridge has four junctions where the one-dimensional structure
branches. The script builds the confidence region, labels its connected
pieces and checks that the whole skeleton lands inside a single piece.

Run with ``python demos/sun_cross_topology.py``.
"""

from __future__ import annotations

from ridgeci.bootstrap import BootstrapConfig, confidence_region
from ridgeci.field import default_grid, evaluate_field, hausdorff_to_set
from ridgeci.kde import default_bandwidth, fit
from ridgeci.synthetic import build_model, ridge_components, sample, true_ridge_points


def main(seed: int = 5) -> None:
    model = build_model("sun_cross")
    X = sample(model, 5000, seed)
    h = default_bandwidth(X, model.case)
    est = fit(X, h)
    field = evaluate_field(est, default_grid(X, h), use_log=True)
    region, _ = confidence_region(est, field, BootstrapConfig(B=200, rho_n="tube", seed=seed))

    pts = field.coords[region.mask]
    truth = true_ridge_points(model, 256)
    keep = est.jets(truth)[0] >= field.floor_threshold
    truth = truth[keep]
    _, from_truth = hausdorff_to_set(pts, truth)
    pieces = ridge_components(region.mask, field.grid.shape, pts, truth, field.grid.cell_diagonal)

    print(f"n = {X.shape[0]}, h = {h:.3f}, threshold = {region.threshold:.4f}")
    print(f"region nodes: {pts.shape[0]}")
    print(f"skeleton points above the density floor: {truth.shape[0]} of 256")
    print(f"farthest skeleton point from the region: {from_truth:.3f} "
          f"(half a cell diagonal is {0.5 * field.grid.cell_diagonal:.3f})")
    print(f"connected region pieces touching the skeleton: {pieces}")
    print("one piece means the ring and both diameters are captured as a connected set")


if __name__ == "__main__":
    main()
