//! Persistent bar codes of sampled potentials and the exponentially small
//! spectrum of discrete Witten Laplacians.

pub mod arrhenius;
pub mod bottleneck;
pub mod field;
pub mod landscapes;
pub mod numeric;
pub mod persistence;
pub mod prefactor;
pub mod quad;
pub mod sparse;
pub mod spectra;
pub mod svtoolkit;
pub mod witten;

pub use field::{critical_levels, sample, CriticalLevels, Expr, FieldError, GridTopology, LevelWindow, SampledField, TopologyKind};
pub use persistence::{barcode, barcode_over, build_filtration, relative_betti, relative_betti_over, Bar, BarCode, CoefficientField, CubicalFiltration};
pub use arrhenius::{classify, predict_window_spectrum, SpectralPrediction};
pub use landscapes::{Builtin, Landscape, ReferenceModel};
pub use numeric::LogValue;
pub use prefactor::{MorseDatum, PrefactorError, Slopes};
pub use spectra::{match_and_fit, spectral_report, FitSummary, ReportOptions, SpectralReport};
