use std::fs;
use std::path::{Path, PathBuf};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Exp, StandardNormal};

/// Three-factor features plus `time`/`status`, where the hazard rises with
/// the first factor.
pub fn write_synthetic_csv(path: &Path, n: usize, p: usize, seed: u64) {
    let mut r = ChaCha20Rng::seed_from_u64(seed);
    let mut text = (1..=p).map(|j| format!("x{j}")).collect::<Vec<_>>().join(",");
    text.push_str(",time,status\n");
    for _ in 0..n {
        let f: Vec<f64> = (0..3).map(|_| r.sample(StandardNormal)).collect();
        for j in 0..p {
            let e: f64 = r.sample(StandardNormal);
            text.push_str(&format!("{},", 0.7 * f[j % 3] + 0.7 * e));
        }
        let event: f64 = r.sample(Exp::new((0.8 * f[0]).exp()).unwrap());
        let censor: f64 = r.sample(Exp::new(0.5).unwrap());
        text.push_str(&format!("{},{}\n", event.min(censor), u8::from(event <= censor)));
    }
    fs::write(path, text).unwrap();
}

/// A fresh scratch directory under the system temp dir.
pub fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fmradio-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}
