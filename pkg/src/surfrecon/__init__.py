"""Level-set reconstruction of curves and surfaces from point clouds."""
