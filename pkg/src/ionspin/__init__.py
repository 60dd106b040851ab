"""Electron/nuclear spin registers of ions in a magnetic-field gradient.

Submodules
----------
quantum    spin operators, tensor embedding, propagators, fidelity metrics
ion        species constants, Hamiltonians, magnetic-dipole spectra
trap       ion-chain statics, normal modes, couplings, feasibility checks
compiler   circuit -> pulse schedule lowering
simulator  schedule execution, selectivity scans, dephasing Monte-Carlo
cli        command-line entry point
"""

__version__ = "0.1.0"
