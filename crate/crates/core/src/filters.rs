#[derive(Debug, thiserror::Error)]
pub enum FilterError {
    #[error("placeholder")]
    Placeholder,
}
