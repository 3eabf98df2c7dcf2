//! Writes the bundled scenarios as JSON files into the given directory.

use std::path::PathBuf;

fn main() -> std::io::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "scenarios".into()));
    std::fs::create_dir_all(&dir)?;
    for sc in rulerepair::scenarios::bundled() {
        let path = dir.join(format!("{}.json", sc.name));
        std::fs::write(&path, sc.to_json())?;
        println!("{}", path.display());
    }
    Ok(())
}
