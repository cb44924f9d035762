#![allow(dead_code)]

use bench::TrainConfig;

/// A configuration small enough for quick end-to-end tests.
pub fn small_config() -> TrainConfig {
    TrainConfig {
        n_source: 800,
        n_target: 200,
        epochs: 60,
        erm_epochs: 30,
        tta_epochs: 5,
        ..TrainConfig::default()
    }
}

/// A fresh scratch directory under the target dir.
pub fn scratch(name: &str) -> std::path::PathBuf {
    let dir = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
