#[derive(Debug, thiserror::Error)]
pub enum DiagnosticsError {
    #[error("placeholder")]
    Placeholder,
}
