"""Flip-OFDM and ACO-OFDM link simulation for unipolar (intensity) channels.

Submodules:

- `numerics`: special functions, seeded streams, quadrature, minimization
- `spectral`: radix-2 FFT pair with an operation counter
- `qam`: Gray-mapped square QAM and its analytic BER
- `flip_ofdm`, `aco_ofdm`: transmitters and receivers
- `channel`: nonnegative FIR channel plus AWGN
- `detection`: negative clipper, threshold filter and their noise analysis
- `sim`: Monte Carlo BER sweeps and gain/complexity reports
- `cli`: batch command-line front end
"""

__version__ = "0.1.0"
