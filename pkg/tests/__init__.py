"""
FTL-NIDS test suites
Unit tests per module plus CLI and full-experiment acceptance runs
"""
