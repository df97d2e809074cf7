//! Summaries of the error and component datasets: principal component
//! scores, MANOVA with Pillai's trace, effect means and minimum-error tables.

mod effects;
mod manova;
mod model;
mod pca;
mod summary;

pub use effects::{effect_means, EffectCell, EffectTable};
pub use manova::{manova_pillai, pillai_f, ManovaTable, ManovaTermResult};
pub use model::{build_model_matrix, Factor, FactorFrame, ModelMatrix, Term, STUDY_FACTORS};
pub use pca::{pca_scores, PcaSummary};
pub use summary::{format_value, summary_table, MinError, SummaryRow};
