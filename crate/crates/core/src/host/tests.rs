use proptest::prelude::*;

use super::*;
use crate::ftl::{FtlConfig, FtlVariant};

const OWNER: AccessKey = AccessKey::new(0x33);
const BAD: AccessKey = AccessKey::new(0xBAD);

fn stack_with(variant: FtlVariant, cfg: HostConfig) -> HostStack {
    let ftl = FtlConfig::new(variant).with_geometry(FlashGeometry::small());
    HostStack::with_device(cfg, KeyFtl::new(ftl).unwrap()).unwrap()
}

fn stack() -> HostStack {
    stack_with(FtlVariant::KeyStatic, HostConfig::default())
}

fn pattern(len: usize, seed: u8) -> Vec<u8> {
    (0..len)
        .map(|i| (i as u8).wrapping_mul(31) ^ seed)
        .collect()
}

fn device_reads(h: &HostStack) -> u64 {
    h.transport().with_device(|d| d.metrics().flash.reads)
}

fn locked_file(h: &HostStack, path: &str, bytes: usize) -> Vec<u8> {
    let data = pattern(bytes, 7);
    let f = h.open_key(path, OWNER, true).unwrap();
    h.file_write(f, 0, &data).unwrap();
    h.close_key(f).unwrap();
    data
}

#[test]
fn round_trip_one_mib() {
    let h = stack();
    let data = pattern(1 << 20, 1);
    let f = h.open_key("big", OWNER, true).unwrap();
    h.file_write(f, 0, &data).unwrap();
    assert_eq!(h.file_read(f, 0, data.len() as u64).unwrap(), data);
    h.drop_caches();
    assert_eq!(h.file_read(f, 0, data.len() as u64).unwrap(), data);
    assert!(h.key_lba_table().is_empty());
}

#[test]
fn unaligned_writes_read_modify_write() {
    let h = stack();
    let f = h.open_key("a", OWNER, true).unwrap();
    h.file_write(f, 0, &pattern(10_000, 2)).unwrap();
    h.drop_caches();
    h.file_write(f, 4000, &[0xAA; 200]).unwrap();
    let mut want = pattern(10_000, 2);
    want[4000..4200].fill(0xAA);
    h.drop_caches();
    assert_eq!(h.file_read(f, 0, 10_000).unwrap(), want);
    h.file_write(f, 12_000, &[1; 10]).unwrap();
    want.resize(12_000, 0);
    want.extend_from_slice(&[1; 10]);
    assert_eq!(h.inode("a").unwrap().size, 12_010);
    assert_eq!(h.file_read(f, 0, 12_010).unwrap(), want);
}

#[test]
fn open_verify_grants_owner_and_denies_others() {
    let h = stack();
    locked_file(&h, "db", 8192);
    let f = h.open_key("db", OWNER, false).unwrap();
    h.close_key(f).unwrap();
    assert_eq!(
        h.open_key("db", BAD, false),
        Err(HostError::OpenDeniedByDevice("db".into()))
    );
    assert!(h.key_inode_table().is_empty());
    assert_eq!(
        h.open_key("nope", OWNER, false),
        Err(HostError::NotFound("nope".into()))
    );
}

#[test]
fn keyless_file_takes_the_first_writers_key() {
    let h = stack();
    let f = h.open_key("a", AccessKey::NONE, true).unwrap();
    h.file_write(f, 0, &[1; 4096]).unwrap();
    h.close_key(f).unwrap();
    let f = h.open_key("a", BAD, false).unwrap();
    h.file_write(f, 0, &[2; 4096]).unwrap();
    h.close_key(f).unwrap();
    assert!(h.open_key("a", AccessKey::NONE, false).is_err());
}

#[test]
fn close_modes() {
    let h = stack();
    let f = h.open_key("a", OWNER, true).unwrap();
    h.close_key(f).unwrap();
    assert!(h.key_inode_table().is_empty());
    assert_eq!(h.close_key(f), Err(HostError::BadHandle(f.id())));

    let h = stack_with(
        FtlVariant::KeyStatic,
        HostConfig {
            close_mode: CloseMode::NoClose,
            ..HostConfig::default()
        },
    );
    for i in 0..100 {
        let f = h.open_key(&format!("f{i}"), OWNER, true).unwrap();
        h.close_key(f).unwrap();
    }
    assert_eq!(h.key_inode_table().len(), 100);
    assert_eq!(h.open_handles(), 0);
}

#[test]
fn cached_pages_skip_the_device() {
    let h = stack();
    locked_file(&h, "a", 4 * 4096);
    let f = h.open_key("a", OWNER, false).unwrap();
    h.file_read(f, 4096, 4096).unwrap();
    let before = device_reads(&h);
    h.file_read(f, 4096, 4096).unwrap();
    assert_eq!(device_reads(&h), before);
    // The first page always goes to the device.
    h.file_read(f, 0, 10).unwrap();
    assert_eq!(device_reads(&h), before + 1);
}

#[test]
fn page_cache_leak_without_read_verify() {
    let h = stack_with(
        FtlVariant::KeyStatic,
        HostConfig {
            read_verify: false,
            ..HostConfig::default()
        },
    );
    let data = locked_file(&h, "a", 8192);
    let f = h.open_key("a", AccessKey::NONE, false).unwrap();
    assert_eq!(h.file_read(f, 0, 8192).unwrap(), data);
    h.drop_caches();
    assert!(matches!(
        h.file_read(f, 0, 8192),
        Err(HostError::AccessDenied { .. })
    ));
}

#[test]
fn delete_needs_the_key() {
    let h = stack();
    let data = locked_file(&h, "a", 3 * 4096);
    let free = h.free_pages();
    assert_eq!(
        h.file_delete("a", AccessKey::NONE),
        Err(HostError::DeleteDenied("a".into()))
    );
    let f = h.open_key("a", OWNER, false).unwrap();
    assert_eq!(h.file_read(f, 0, data.len() as u64).unwrap(), data);
    h.close_key(f).unwrap();
    h.file_delete("a", OWNER).unwrap();
    assert!(!h.exists("a"));
    assert_eq!(h.free_pages(), free + 3);
    assert_eq!(
        h.file_delete("a", OWNER),
        Err(HostError::NotFound("a".into()))
    );
    // Reused pages carry no key.
    let f = h.open_key("b", AccessKey::new(9), true).unwrap();
    h.file_write(f, 0, &[0; 3 * 4096]).unwrap();
}

#[test]
fn delete_keyless_file_without_key() {
    let h = stack();
    let f = h.open_key("a", AccessKey::NONE, true).unwrap();
    h.file_write(f, 0, &[1; 4096]).unwrap();
    h.close_key(f).unwrap();
    h.file_delete("a", AccessKey::NONE).unwrap();
}

#[test]
fn unverified_delete_quarantines_locked_pages() {
    let h = stack_with(
        FtlVariant::KeyStatic,
        HostConfig {
            read_verify: false,
            ..HostConfig::default()
        },
    );
    locked_file(&h, "a", 2 * 4096);
    h.file_delete("a", AccessKey::NONE).unwrap();
    assert_eq!(h.quarantined_pages(), 2);
}

#[test]
fn classification_and_raw_io() {
    let h = stack();
    let ino = h.create_at("pinned", 0x1000, 6 * 4096).unwrap();
    let f = h.open_key("pinned", OWNER, false).unwrap();
    h.file_write(f, 0, &[5; 6 * 4096]).unwrap();
    assert_eq!(h.classify_request(0x1000), RequestClass::NormalFileIo(ino));
    assert_eq!(
        h.classify_request(0x1000 + 47),
        RequestClass::NormalFileIo(ino)
    );
    assert_eq!(h.classify_request(0x1000 + 48), RequestClass::DirectIo);
    assert_eq!(h.classify_request(0), RequestClass::DirectIo);

    let done = h
        .raw_io(0x1000, 48, RawOp::Write(vec![0; 6 * 4096]))
        .unwrap();
    assert_eq!(done.len(), 6);
    assert!(done
        .iter()
        .all(|c| c.status == CompletionStatus::AccessDenied));
    let lbas: Vec<u64> = done.iter().map(|c| c.lba).collect();
    assert_eq!(lbas, (0..6).map(|i| 0x1000 + 8 * i).collect::<Vec<_>>());
    assert!(h.raw_io(0x1000, 8, RawOp::Read).unwrap()[0].status == CompletionStatus::AccessDenied);
    assert!(h.raw_io(0, 8, RawOp::Read).unwrap()[0].is_success());
    assert!(h.raw_io(3, 8, RawOp::Read).is_err());
    assert_eq!(h.file_read(f, 0, 4096).unwrap(), vec![5; 4096]);
}

#[test]
fn out_of_range_and_bad_handles() {
    let h = stack();
    let f = h.open_key("a", OWNER, true).unwrap();
    h.file_write(f, 0, &[1; 100]).unwrap();
    assert!(matches!(
        h.file_read(f, 50, 51),
        Err(HostError::OutOfRange { .. })
    ));
    assert_eq!(h.file_read(f, 100, 0).unwrap(), Vec::<u8>::new());
    h.close_key(f).unwrap();
    assert_eq!(h.file_read(f, 0, 1), Err(HostError::BadHandle(f.id())));
    assert_eq!(h.file_write(f, 0, &[1]), Err(HostError::BadHandle(f.id())));
}

#[test]
fn queue_depth_batches_are_equivalent() {
    let data = pattern(64 * 4096, 3);
    for qd in [1, 4, 32, 128] {
        let h = stack_with(
            FtlVariant::KeyDynamic,
            HostConfig {
                queue_depth: qd,
                ..HostConfig::default()
            },
        );
        let f = h.open_key("a", OWNER, true).unwrap();
        h.file_write(f, 0, &data).unwrap();
        h.drop_caches();
        assert_eq!(h.file_read(f, 0, data.len() as u64).unwrap(), data);
        assert_eq!(h.metrics().device_commands, 128);
    }
    assert!(HostStack::with_device(
        HostConfig {
            queue_depth: 0,
            ..HostConfig::default()
        },
        KeyFtl::new(FtlConfig::default().with_geometry(FlashGeometry::small())).unwrap()
    )
    .is_err());
}

#[test]
fn concurrent_clients_keep_tables_clean() {
    let h = Arc::new(stack_with(
        FtlVariant::KeyDynamic,
        HostConfig {
            queue_depth: 8,
            ..HostConfig::default()
        },
    ));
    let threads: Vec<_> = (0..4u32)
        .map(|t| {
            let h = Arc::clone(&h);
            std::thread::spawn(move || {
                let key = AccessKey::new(100 + t);
                for i in 0..8 {
                    let path = format!("c{t}-{i}");
                    let data = pattern(5 * 4096, t as u8);
                    let f = h.open_key(&path, key, true).unwrap();
                    h.file_write(f, 0, &data).unwrap();
                    assert_eq!(h.file_read(f, 0, data.len() as u64).unwrap(), data);
                    h.close_key(f).unwrap();
                }
            })
        })
        .collect();
    for t in threads {
        t.join().unwrap();
    }
    assert!(h.key_lba_table().is_empty());
    assert!(h.key_inode_table().is_empty());
    assert_eq!(h.file_count(), 32);
}

#[derive(Clone, Debug)]
enum Op {
    OwnerRead(u64),
    OwnerWrite(u64, u8),
    AttackerOpenRead(u64, u64),
    AttackerRaw(u64),
    AttackerDelete,
    DropCaches,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0u64..6).prop_map(Op::OwnerRead),
        (1u64..6, any::<u8>()).prop_map(|(p, b)| Op::OwnerWrite(p, b)),
        (0u64..6, 1u64..6).prop_map(|(p, n)| Op::AttackerOpenRead(p, n)),
        (0u64..6).prop_map(Op::AttackerRaw),
        Just(Op::AttackerDelete),
        Just(Op::DropCaches),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Nothing a keyless client does reveals the locked file's first page,
    /// and whole-file reads never succeed for it.
    #[test]
    fn keyless_client_never_sees_protected_bytes(
        ops in prop::collection::vec(op(), 1..40),
        variant in prop::sample::select(vec![FtlVariant::KeyStatic, FtlVariant::KeyDynamic]),
    ) {
        let h = stack_with(variant, HostConfig::default());
        let first = pattern(4096, 0x5A);
        let owner = h.open_key("v", OWNER, true).unwrap();
        h.file_write(owner, 0, &first).unwrap();
        h.file_write(owner, 4096, &pattern(5 * 4096, 1)).unwrap();
        let ino = h.inode("v").unwrap();
        let base = ino.lpn_of(0).unwrap() * 8;
        for op in ops {
            match op {
                Op::OwnerRead(p) => { h.file_read(owner, p * 4096, 4096).unwrap(); }
                Op::OwnerWrite(p, b) => { h.file_write(owner, p * 4096, &[b; 4096]).unwrap(); }
                Op::AttackerOpenRead(p, n) => {
                    if let Ok(f) = h.open_key("v", AccessKey::NONE, false) {
                        let n = n.min(6 - p);
                        if let Ok(bytes) = h.file_read(f, p * 4096, n * 4096) {
                            prop_assert!(p > 0, "first page leaked");
                            prop_assert!(!(p == 0 && n == 6));
                            prop_assert!(!bytes.windows(64).any(|w| first.windows(64).any(|f| f == w)));
                        }
                        h.close_key(f).unwrap();
                    }
                }
                Op::AttackerRaw(p) => {
                    let c = h.raw_io(base + p * 8, 8, RawOp::Read).unwrap();
                    prop_assert_eq!(c[0].status, CompletionStatus::AccessDenied);
                    prop_assert!(c[0].payload.is_none());
                }
                Op::AttackerDelete => {
                    prop_assert!(h.file_delete("v", AccessKey::NONE).is_err());
                }
                Op::DropCaches => h.drop_caches(),
            }
            prop_assert!(h.key_lba_table().is_empty());
        }
        prop_assert_eq!(h.file_read(owner, 0, 4096).unwrap(), first);
    }
}
