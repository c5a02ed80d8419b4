"""Topology extraction of curvilinear networks (roads, vessels) from
foreground-probability rasters, and topology-aware evaluation."""
