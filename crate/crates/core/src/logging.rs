//! Minimal stderr logger controlled by the `SEGLOC_LOG` environment
//! variable (`error`, `info` or `debug`; default `info`).

use std::sync::OnceLock;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Level {
    Error = 0,
    Info = 1,
    Debug = 2,
}

static LEVEL: OnceLock<Level> = OnceLock::new();

pub fn level() -> Level {
    *LEVEL.get_or_init(|| match std::env::var("SEGLOC_LOG").as_deref() {
        Ok("error") => Level::Error,
        Ok("debug") => Level::Debug,
        _ => Level::Info,
    })
}

pub fn enabled(lv: Level) -> bool {
    lv <= level()
}

#[doc(hidden)]
pub fn emit(lv: Level, args: std::fmt::Arguments<'_>) {
    if enabled(lv) {
        let tag = match lv {
            Level::Error => "error",
            Level::Info => "info",
            Level::Debug => "debug",
        };
        eprintln!("[segloc {tag}] {args}");
    }
}

#[macro_export]
macro_rules! log_error {
    ($($arg:tt)*) => { $crate::logging::emit($crate::logging::Level::Error, format_args!($($arg)*)) };
}

#[macro_export]
macro_rules! log_info {
    ($($arg:tt)*) => { $crate::logging::emit($crate::logging::Level::Info, format_args!($($arg)*)) };
}

#[macro_export]
macro_rules! log_debug {
    ($($arg:tt)*) => { $crate::logging::emit($crate::logging::Level::Debug, format_args!($($arg)*)) };
}
