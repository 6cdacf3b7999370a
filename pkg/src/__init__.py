"""ldtk numerical library: Markov chains, lattice models, simulation and MFT."""
