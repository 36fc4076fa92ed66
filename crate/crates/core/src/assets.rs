//! Bundled example models and monitors.

pub const TASK_MODEL: &str = include_str!("../assets/task.model");
pub const TASK_MONITOR: &str = include_str!("../assets/task.monitor");
pub const READERS_WRITERS_MODEL: &str = include_str!("../assets/readers_writers.model");
pub const READERS_WRITERS_MONITOR: &str = include_str!("../assets/readers_writers.monitor");
