"""BER figure rendering for coopcdma result CSVs."""

__version__ = "0.1.0"

from .render import PlotDataError, PlotSpec, Series, load_series, render

__all__ = ["PlotDataError", "PlotSpec", "Series", "load_series", "render"]
