"""Homogenized cable model of a myelinated axon.

Submodules:
  geometry       periodicity cell, contact angles, exact measures
  meshing        axisymmetric cracked meshes with corner collar patches
  fem_core       r-weighted P1 operators and sparse solves
  homogenization cell problem for the corrector N and effective conductivity
  node_constant  node leak constant: closed form, corner analysis, eigenvalue
  membrane       gating dynamics and ionic current models
  cable          homogenized 1-D nonlinear cable solver
  microscale     reference solver for the full periodic fine-scale problem
  cli            configuration files, subcommands, CSV reports
"""

__version__ = "0.1.0"
