//! Benchmark harness for the fractal-degree kernels; see `benches/`.
