"""Toolkit for evaluating DNS ad/tracker blocklists against smart-TV traffic.

Ingests app-labeled flow and HTTP logs, maps destinations to registrable
domains, classifies them by party, scans for PII exposure, computes
blocklist effectiveness metrics, and runs a live DNS sinkhole.
"""

__version__ = "0.1.0"
