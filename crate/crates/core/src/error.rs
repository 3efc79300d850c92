use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{0} cells do not form a square grid (or a 2x1 row)")]
    UnsupportedLayout(usize),

    #[error("{channels} sub-channels cannot be split evenly among {users} users in cell {cell}")]
    IndivisibleChannels { channels: usize, users: usize, cell: usize },

    #[error("user {user} is not assigned to sub-channel {channel}")]
    NotAssigned { user: usize, channel: usize },

    #[error("user {user} has non-positive own path gain on sub-channel {channel}")]
    ZeroGain { user: usize, channel: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no feasible power allocation exists")]
    Infeasible,

    #[error("grid search over {variables} variables exceeds the guard of {max}")]
    GridGuard { variables: usize, max: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
