"""Working-cycle detection for wheel-loader telemetry with convolutional-recurrent networks."""

__version__ = "0.1.0"

# class index order used everywhere: e0 travel, e1 loading, e2 unloading
CLASS_NAMES = ("travel", "loading", "unloading")
TRAVEL, LOADING, UNLOADING = 0, 1, 2
