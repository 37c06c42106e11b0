"""Acoustic spin control of a silicon-vacancy centre driven by surface acoustic waves.

Subpackages are organised by concern:

``siv_model``   ground-state Hamiltonian, qubit reduction, field tuning
``dynamics``    Lindblad integrator, rotating frames, two-level oracle
``saw_device``  transducer response, S-parameters, power and strain chain
``sequence``    pulse sequences and their compilation into segments
``experiments`` ODAR / Rabi / Ramsey drivers and photon histograms
``fitting``     Levenberg-Marquardt fits of the measured curves
``cli``         ``simulate`` command line entry point
"""

__version__ = "0.1.0"
