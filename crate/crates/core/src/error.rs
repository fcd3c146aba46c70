use crate::classify::ClassifyError;
use crate::constraint::ConstraintError;
use crate::expr::ExprError;
use crate::level_sets::LevelSetError;
use crate::profile::ProfileError;
use crate::speed::SpeedError;
use crate::translator::TranslatorError;

/// Any error raised by the library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Speed(#[from] SpeedError),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error(transparent)]
    LevelSet(#[from] LevelSetError),
    #[error(transparent)]
    Translator(#[from] TranslatorError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

impl Error {
    /// True when the error comes from reading a speed specification rather than from the
    /// numerics.
    pub fn is_parse_error(&self) -> bool {
        matches!(
            self,
            Error::Expr(ExprError::Parse { .. } | ExprError::Dimension { .. })
                | Error::Speed(
                    SpeedError::UnknownSpeed(_)
                        | SpeedError::Syntax(_)
                        | SpeedError::BadDimension(_)
                )
                | Error::Speed(SpeedError::Expr(
                    ExprError::Parse { .. } | ExprError::Dimension { .. }
                ))
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
