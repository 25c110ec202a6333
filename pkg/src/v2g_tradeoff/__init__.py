"""User-tunable V2G smart charging: a two-player horizon-splitting game
between tariff revenue and battery degradation, solved through its exact
potential, plus robustness and trade-off studies."""

from importlib.metadata import PackageNotFoundError, version as _version

try:
    __version__ = _version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"
