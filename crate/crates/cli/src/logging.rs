//! Minimal stderr logger gated by the NRSER_LOG environment variable
//! (error | warn | info | debug; default warn).

use std::sync::OnceLock;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Level {
    Error = 0,
    Warn = 1,
    Info = 2,
    Debug = 3,
}

static LEVEL: OnceLock<Level> = OnceLock::new();

pub fn level() -> Level {
    *LEVEL.get_or_init(|| {
        match std::env::var("NRSER_LOG")
            .unwrap_or_default()
            .to_lowercase()
            .as_str()
        {
            "error" => Level::Error,
            "info" => Level::Info,
            "debug" => Level::Debug,
            _ => Level::Warn,
        }
    })
}

pub fn log(at: Level, msg: &str) {
    if at <= level() {
        eprintln!("nrser: {msg}");
    }
}

pub fn info(msg: &str) {
    log(Level::Info, msg);
}

pub fn warn(msg: &str) {
    log(Level::Warn, msg);
}

#[allow(dead_code)]
pub fn debug(msg: &str) {
    log(Level::Debug, msg);
}
