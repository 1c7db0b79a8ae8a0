//! Fixtures shared by the benchmarks.

use keyssd_core::{AccessKey, FlashGeometry, FlushMode, FtlConfig, FtlVariant, KeyFtl};

pub const OWNER: AccessKey = AccessKey::new(0x000033);

/// A device of the small geometry with `pages` host pages written under
/// `OWNER`, flushed so no table page is dirty.
pub fn populated(variant: FtlVariant, pages: u64) -> KeyFtl {
    let mut ftl = KeyFtl::new(FtlConfig::new(variant).with_geometry(FlashGeometry::small()))
        .expect("small geometry is valid");
    let pb = ftl.geometry().host_page_bytes as usize;
    for lpn in 0..pages {
        ftl.handle_write(lpn, OWNER, &vec![lpn as u8; pb])
            .expect("fixture write");
    }
    ftl.handle_flush(FlushMode::AllFlush)
        .expect("fixture flush");
    ftl
}

/// Default geometry, empty, with the given flush mode.
pub fn full_size(variant: FtlVariant, mode: FlushMode) -> KeyFtl {
    let mut cfg = FtlConfig::new(variant);
    cfg.flush_mode = mode;
    KeyFtl::new(cfg).expect("default geometry is valid")
}
