//! Recomputes the pinned baselines and prints them in the
//! `experiment,key,value,tolerance` format. Pass `--write` to overwrite
//! `baselines/pinned.csv`.

use rosseland::verify::baseline::format_baselines;
use rosseland::verify::suite::compute_baselines;
use rosseland::PicardSettings;

fn main() {
    let entries = compute_baselines(&PicardSettings::default()).expect("baseline experiments run");
    let text = format_baselines(&entries);
    if std::env::args().any(|a| a == "--write") {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/baselines/pinned.csv");
        let header = "# regenerate with: cargo run --release -p rosseland --example pin_baselines -- --write\n";
        std::fs::write(path, format!("{header}{text}")).expect("baseline file writable");
    } else {
        print!("{text}");
    }
}
