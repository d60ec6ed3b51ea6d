"""
FTL-NIDS

Federated transfer learning simulator for IIoT network intrusion detection:
preprocessing, a from-scratch residual conv + dense classifier, federated
rounds, classical baselines and macro-averaged metrics.
"""

__version__ = '1.0.0'
__author__ = 'FTL-NIDS Team'
