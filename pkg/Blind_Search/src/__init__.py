# Blind Search - Token Process Toolkit
# Exact hitting times, simulation, bounds and optimization of blind-search step distributions

__version__ = "0.1.0"
__author__ = "Blind Search Team"
