//! Prompt overrides from a directory of `<name>.v<N>.txt` files.

use std::path::Path;

use attune_core::prompts::{PromptCatalog, PromptId, PromptTemplate};

/// The embedded catalog with every template replaced by the highest-version
/// file for it found in `dir`.
pub fn load_catalog(dir: Option<&Path>) -> std::io::Result<PromptCatalog> {
    let mut catalog = PromptCatalog::embedded();
    let Some(dir) = dir else {
        return Ok(catalog);
    };
    for id in PromptId::ALL {
        let prefix = format!("{}.v", id.asset_name());
        let mut best: Option<(u32, std::path::PathBuf)> = None;
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
                continue;
            };
            let version = name
                .strip_prefix(&prefix)
                .and_then(|rest| rest.strip_suffix(".txt"))
                .and_then(|v| v.parse::<u32>().ok());
            if let Some(v) = version {
                if best.as_ref().is_none_or(|(b, _)| v > *b) {
                    best = Some((v, path));
                }
            }
        }
        if let Some((version, path)) = best {
            let text = std::fs::read_to_string(&path)?;
            catalog.replace(PromptTemplate::new(id, version, text));
        }
    }
    Ok(catalog)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn highest_version_wins() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("tca.v2.txt"), "two").unwrap();
        std::fs::write(dir.path().join("tca.v10.txt"), "ten").unwrap();
        std::fs::write(dir.path().join("notes.txt"), "x").unwrap();
        let c = load_catalog(Some(dir.path())).unwrap();
        assert_eq!(c.text(PromptId::ToneAdaptation), "ten");
        assert_eq!(c.get(PromptId::ToneAdaptation).version, 10);
        assert_eq!(c.get(PromptId::Intervention).version, 1);
    }
}
