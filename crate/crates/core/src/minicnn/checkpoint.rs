use std::path::Path;

use super::arch::Arch;
use super::model::{init_model, MultiStreamModel};
use crate::blockio::BlockFile;
use crate::error::{Error, Result};

const MAGIC: [u8; 4] = *b"MVCN";

pub fn model_to_blocks(model: &MultiStreamModel) -> BlockFile {
    let header = format!(
        "arch={}\ngroups={}\nclasses={}\n",
        model.arch,
        model.num_groups(),
        model.num_classes
    );
    let mut file = BlockFile::new(MAGIC, header);
    for b in model.all_blocks() {
        file.push(b);
    }
    file
}

pub fn model_from_blocks(file: &BlockFile, origin: &Path) -> Result<MultiStreamModel> {
    let mut arch = None;
    let mut groups = None;
    let mut classes = None;
    for line in file.header.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::format(origin, format!("bad header line '{line}'")))?;
        match k {
            "arch" => {
                arch = Some(
                    v.parse::<Arch>()
                        .map_err(|e| Error::format(origin, e.to_string()))?,
                )
            }
            "groups" => groups = v.parse::<usize>().ok(),
            "classes" => classes = v.parse::<usize>().ok(),
            _ => return Err(Error::format(origin, format!("unknown header key '{k}'"))),
        }
    }
    let (Some(arch), Some(groups), Some(classes)) = (arch, groups, classes) else {
        return Err(Error::format(origin, "incomplete model header"));
    };
    let mut model =
        init_model(&arch, groups, classes, 0).map_err(|e| Error::format(origin, e.to_string()))?;
    let targets = model.all_blocks_mut();
    if targets.len() != file.blocks.len() {
        return Err(Error::format(
            origin,
            format!(
                "expected {} parameter blocks, found {}",
                targets.len(),
                file.blocks.len()
            ),
        ));
    }
    for (i, (dst, src)) in targets.into_iter().zip(&file.blocks).enumerate() {
        if dst.len() != src.len() {
            return Err(Error::format(
                origin,
                format!(
                    "block {i}: expected {} values, found {}",
                    dst.len(),
                    src.len()
                ),
            ));
        }
        dst.copy_from_slice(src);
    }
    Ok(model)
}

pub fn save_model(model: &MultiStreamModel, path: &Path) -> Result<()> {
    model_to_blocks(model).write(path)
}

pub fn load_model(path: &Path) -> Result<MultiStreamModel> {
    model_from_blocks(&BlockFile::read(path, MAGIC)?, path)
}
