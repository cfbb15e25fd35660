//! Star products: exact Moyal calculus on polynomials, the covariant
//! deformation series and oscillatory quadrature with the semiclassical kernel.

pub mod field;
pub mod poly;
pub mod quad;
pub mod series;

pub use field::{DerivativeMode, FieldSymbol, Jet};
pub use poly::{moyal_pieces, moyal_poly, moyal_truncated, PolySymbol};
pub use quad::{quad_product, AnalyticSymbol, Envelope, GaussianPoly, QuadConfig, QuadProduct};
pub use series::{germ_residual, series_product, SeriesConfig};
