use super::*;
use crate::oracle::OracleModel;
use proptest::prelude::*;

const K33: AccessKey = AccessKey::new(0x000033);
const K18: AccessKey = AccessKey::new(0x000018);
const K27: AccessKey = AccessKey::new(0x000027);

fn cfg(variant: FtlVariant) -> FtlConfig {
    FtlConfig::new(variant).with_geometry(FlashGeometry::small())
}

fn ftl(variant: FtlVariant) -> KeyFtl {
    KeyFtl::new(cfg(variant)).unwrap()
}

fn page(fill: u8) -> Vec<u8> {
    vec![fill; 4096]
}

fn keyed() -> [FtlVariant; 2] {
    [FtlVariant::KeyStatic, FtlVariant::KeyDynamic]
}

#[test]
fn write_sequence_registers_and_denies() {
    for v in keyed() {
        let mut f = ftl(v);
        assert_eq!(f.handle_write(0, K33, &page(1)).unwrap(), Verdict::Granted);
        assert_eq!(f.stored_key(0), Some(K33));
        assert_eq!(f.handle_write(2, K18, &page(2)).unwrap(), Verdict::Granted);
        assert_eq!(
            f.handle_read(0, K33).unwrap(),
            ReadOutcome::Granted(page(1))
        );
        assert_eq!(f.handle_write(4, K27, &page(4)).unwrap(), Verdict::Granted);
        assert_eq!(
            f.handle_read(2, AccessKey::new(0xFF_FFFF)).unwrap(),
            ReadOutcome::Denied
        );
        // Mismatched write leaves data untouched.
        assert_eq!(
            f.handle_write(2, AccessKey::new(0xDEAD), &page(9)).unwrap(),
            Verdict::Denied
        );
        assert_eq!(
            f.handle_read(2, K18).unwrap(),
            ReadOutcome::Granted(page(2))
        );
        assert_eq!(f.metrics().denials, 2, "{v:?}");
    }
}

#[test]
fn keyless_write_leaves_page_unprotected() {
    for v in keyed() {
        let mut f = ftl(v);
        assert_eq!(
            f.handle_write(5, AccessKey::NONE, &page(5)).unwrap(),
            Verdict::Granted
        );
        assert_eq!(f.stored_key(5), None);
        assert_eq!(f.handle_write(5, K33, &page(6)).unwrap(), Verdict::Granted);
        assert_eq!(f.stored_key(5), Some(K33));
    }
}

#[test]
fn reads_never_register() {
    for v in keyed() {
        let mut f = ftl(v);
        let before = f.key_state_digest();
        match f.handle_read(77, K33).unwrap() {
            ReadOutcome::Granted(d) => assert_eq!(d, page(0xFF)),
            ReadOutcome::Denied => panic!("NULL-slot read must be granted"),
        }
        assert_eq!(f.stored_key(77), None);
        assert_eq!(f.key_state_digest(), before);
    }
}

#[test]
fn baseline_ignores_keys() {
    let mut f = ftl(FtlVariant::Baseline);
    f.handle_write(2, K18, &page(2)).unwrap();
    assert_eq!(
        f.handle_read(2, AccessKey::NONE).unwrap(),
        ReadOutcome::Granted(page(2))
    );
    assert_eq!(f.handle_write(2, K33, &page(3)).unwrap(), Verdict::Granted);
}

#[test]
fn out_of_range_and_payload_errors() {
    let mut f = ftl(FtlVariant::KeyStatic);
    let n = f.host_lpns();
    assert!(matches!(
        f.handle_read(n, K33),
        Err(FtlError::OutOfRange { .. })
    ));
    assert!(matches!(
        f.handle_write(0, K33, &[0u8; 10]),
        Err(FtlError::PayloadSize { .. })
    ));
    assert!(matches!(
        f.read_multi(n - 1, 2, K33),
        Err(FtlError::OutOfRange { .. })
    ));
}

#[test]
fn multi_page_modes() {
    for v in keyed() {
        let mut f = ftl(v);
        // Pages 10..16: 10 unlocked, 11..16 locked by K18.
        for lpn in 11..16 {
            f.handle_write(lpn, K18, &page(lpn as u8)).unwrap();
        }
        assert_eq!(
            f.authorize_multi(10, 6, K33, MultiMode::FirstLpnOnly)
                .unwrap(),
            Verdict::Granted
        );
        assert_eq!(
            f.authorize_multi(10, 6, K33, MultiMode::AllLpns).unwrap(),
            Verdict::Denied
        );
        for mode in [MultiMode::FirstLpnOnly, MultiMode::AllLpns] {
            assert_eq!(
                f.authorize_multi(11, 1, K33, mode).unwrap(),
                Verdict::Denied
            );
            assert_eq!(
                f.authorize_multi(10, 1, K33, mode).unwrap(),
                Verdict::Granted
            );
        }
    }
}

#[test]
fn multi_page_read_and_write_round_trip() {
    let mut f = ftl(FtlVariant::KeyStatic);
    let data: Vec<u8> = (0..6 * 4096).map(|i| (i / 4096) as u8 + 1).collect();
    // Crosses a device-page boundary (8 host pages per device page).
    assert_eq!(f.write_multi(5, 6, K33, &data).unwrap(), Verdict::Granted);
    assert_eq!(f.read_multi(5, 6, K33).unwrap(), ReadOutcome::Granted(data));
    for lpn in 5..11 {
        assert_eq!(f.stored_key(lpn), Some(K33));
    }
    assert_eq!(f.read_multi(4, 2, K33).unwrap().verdict(), Verdict::Granted);
}

#[test]
fn dynamic_insert_counts_only_new_pages() {
    let mut f = ftl(FtlVariant::KeyDynamic);
    for lpn in 0..10 {
        f.handle_write(lpn, K33, &page(1)).unwrap();
    }
    assert_eq!(f.metrics().index_inserts, 10);
    let searches = f.metrics().index_searches;
    for lpn in 0..10 {
        f.handle_write(lpn, K33, &page(2)).unwrap();
    }
    assert_eq!(f.metrics().index_inserts, 10);
    assert_eq!(f.metrics().index_searches, searches + 10);
}

#[test]
fn lockout_after_threshold() {
    for v in keyed() {
        let mut c = cfg(v);
        c.lockout_threshold = 8;
        let mut f = KeyFtl::new(c).unwrap();
        f.handle_write(0, K33, &page(1)).unwrap();
        for _ in 0..8 {
            assert_eq!(f.handle_read(0, K18).unwrap(), ReadOutcome::Denied);
        }
        assert!(matches!(
            f.handle_read(0, K33),
            Err(FtlError::DeviceLockedOut)
        ));
        assert!(matches!(f.flush(), Err(FtlError::DeviceLockedOut)));
        f.admin_reset_lockout();
        assert!(f.handle_read(0, K33).unwrap().verdict().is_granted());
    }
}

#[test]
fn correct_key_does_not_trip_lockout() {
    let mut c = cfg(FtlVariant::KeyStatic);
    c.lockout_threshold = 8;
    let mut f = KeyFtl::new(c).unwrap();
    f.handle_write(0, K33, &page(1)).unwrap();
    for _ in 0..7 {
        f.handle_read(0, K18).unwrap();
    }
    assert!(f.handle_read(0, K33).unwrap().verdict().is_granted());
    assert_eq!(f.lockout().invalid_attempts(), 7);
    assert!(!f.lockout().is_locked_out());
}

#[test]
fn zero_threshold_is_config_error() {
    let mut c = cfg(FtlVariant::KeyStatic);
    c.lockout_threshold = 0;
    assert!(matches!(KeyFtl::new(c), Err(FtlError::Config(_))));
}

#[test]
fn selective_flush_writes_only_dirty_pages() {
    let mut f = KeyFtl::new(FtlConfig::new(FtlVariant::KeyStatic)).unwrap();
    let pb = f.geometry().device_page_bytes;
    assert!(f.table_pages() > 1);
    // Initial state: nothing dirty.
    assert_eq!(f.handle_flush(FlushMode::SelectiveFlush).unwrap(), 0);
    f.handle_write(0, K33, &page(1)).unwrap();
    assert_eq!(f.handle_flush(FlushMode::SelectiveFlush).unwrap(), pb);
    assert_eq!(f.handle_flush(FlushMode::SelectiveFlush).unwrap(), 0);
    f.handle_write(0, K33, &page(2)).unwrap();
    // 36-byte entries, 32-byte page overhead.
    let per_page = (pb as usize - 32) / 36;
    let pages = (f.device_lpns() as usize).div_ceil(per_page) as u64;
    assert_eq!(f.table_pages() as u64, pages);
    assert_eq!(f.handle_flush(FlushMode::AllFlush).unwrap(), pages * pb);
}

#[test]
fn flush_recover_restores_keys() {
    for v in FtlVariant::ALL {
        let mut f = ftl(v);
        f.handle_write(3, K33, &page(3)).unwrap();
        f.handle_write(40, K18, &page(4)).unwrap();
        f.flush().unwrap();
        f.power_cycle();
        assert!(matches!(
            f.handle_read(3, K33),
            Err(FtlError::NeedsRecovery)
        ));
        f.recover().unwrap();
        assert_eq!(
            f.handle_read(3, K33).unwrap(),
            ReadOutcome::Granted(page(3))
        );
        let other = f.handle_read(40, K33).unwrap().verdict();
        if v == FtlVariant::Baseline {
            assert_eq!(other, Verdict::Granted);
        } else {
            assert_eq!(other, Verdict::Denied, "{v:?}");
        }
    }
}

#[test]
fn unflushed_keys_are_lost() {
    for v in keyed() {
        let mut f = ftl(v);
        f.handle_write(3, K33, &page(3)).unwrap();
        f.power_cycle();
        f.recover().unwrap();
        assert_eq!(f.stored_key(3), None);
        assert!(f.handle_read(3, K18).unwrap().verdict().is_granted());
    }
}

#[test]
fn recover_never_flushed_is_empty() {
    let mut f = ftl(FtlVariant::KeyStatic);
    f.power_cycle();
    f.recover().unwrap();
    assert!(f.mapped_pages().is_empty());
}

#[test]
fn corrupt_metadata_detected() {
    let mut f = ftl(FtlVariant::KeyStatic);
    f.handle_write(0, K33, &page(1)).unwrap();
    f.flush().unwrap();
    // First metadata page lives at PPN 0.
    f.flash_mut().corrupt_byte(0, 100, 0x40).unwrap();
    f.power_cycle();
    assert!(matches!(f.recover(), Err(FtlError::CorruptImage(_))));
}

#[test]
fn open_checks_variant() {
    let mut f = ftl(FtlVariant::KeyStatic);
    f.handle_write(0, K33, &page(1)).unwrap();
    f.flush().unwrap();
    let flash = f.into_flash();
    assert!(matches!(
        KeyFtl::open(cfg(FtlVariant::KeyDynamic), flash.clone()),
        Err(FtlError::VariantMismatch { .. })
    ));
    let mut back = KeyFtl::open(cfg(FtlVariant::KeyStatic), flash).unwrap();
    assert_eq!(back.stored_key(0), Some(K33));
    assert!(back.handle_read(0, K33).unwrap().verdict().is_granted());
}

#[test]
fn power_cycle_resets_flash_counters() {
    let mut f = ftl(FtlVariant::KeyStatic);
    f.handle_write(0, K33, &page(1)).unwrap();
    assert!(f.metrics().flash.programs > 0);
    f.power_cycle();
    assert_eq!(f.metrics().flash, FlashCounters::default());
}

#[test]
fn greedy_gc_picks_sparsest_block() {
    let mut f = ftl(FtlVariant::KeyStatic);
    let ppb = f.geometry().pages_per_block;
    let first_data = f.meta_blocks();
    // Fill three blocks with distinct device pages.
    for d in 0..3 * ppb {
        f.handle_write(d * 8, K33, &page(d as u8)).unwrap();
    }
    // Overwrite all but one page of the first data block.
    for d in 0..ppb - 1 {
        f.handle_write(d * 8, K33, &page(0xA0)).unwrap();
    }
    assert_eq!(f.valid_pages_in(first_data), 1);
    let free_before = f.free_blocks();
    assert_eq!(f.run_gc().unwrap(), 1);
    assert_eq!(f.free_blocks(), free_before + 1);
    assert_eq!(f.valid_pages_in(first_data), 0);
    let last = (ppb - 1) * 8;
    assert_eq!(
        f.handle_read(last, K33).unwrap(),
        ReadOutcome::Granted(page((ppb - 1) as u8))
    );
    assert!(f.handle_read(last, K18).unwrap() == ReadOutcome::Denied);
}

#[test]
fn gc_on_fully_valid_device_is_no_space() {
    let mut f = ftl(FtlVariant::KeyStatic);
    let ppb = f.geometry().pages_per_block;
    for d in 0..ppb {
        f.handle_write(d * 8, K33, &page(1)).unwrap();
    }
    // Force the open block closed by writing one more page.
    f.handle_write(ppb * 8, K33, &page(1)).unwrap();
    assert!(matches!(f.run_gc(), Err(FtlError::NoSpace)));
}

#[test]
fn sustained_overwrites_survive_gc() {
    for v in FtlVariant::ALL {
        let mut f = ftl(v);
        let n = f.host_lpns();
        // Several device-capacities worth of overwrites over half the space.
        for i in 0..(f.geometry().total_pages() * 4) {
            let lpn = (i * 37) % (n / 2);
            let r = f.handle_write(lpn, K33, &page(i as u8)).unwrap();
            assert_eq!(r, Verdict::Granted);
        }
        assert!(f.metrics().gc_runs > 0, "{v:?}");
        assert!(f.handle_read(0, K33).unwrap().verdict().is_granted());
        f.flush().unwrap();
        f.power_cycle();
        f.recover().unwrap();
        assert_eq!(f.stored_key(0).is_some(), v != FtlVariant::Baseline);
    }
}

#[test]
fn trim_requires_key_and_clears_it() {
    for v in keyed() {
        let mut f = ftl(v);
        for lpn in 0..12 {
            f.handle_write(lpn, K33, &page(7)).unwrap();
        }
        assert_eq!(f.trim(0, 12, AccessKey::NONE).unwrap(), Verdict::Denied);
        assert_eq!(f.stored_key(3), Some(K33));
        assert_eq!(f.trim(0, 12, K33).unwrap(), Verdict::Granted);
        for lpn in 0..12 {
            assert_eq!(f.stored_key(lpn), None);
            assert_eq!(
                f.handle_read(lpn, AccessKey::NONE).unwrap(),
                ReadOutcome::Granted(page(0xFF))
            );
        }
        assert_eq!(f.table().ppn(0), None);
    }
}

#[derive(Clone, Debug)]
enum Op {
    Write(u64, u32, u8),
    Read(u64, u32),
    Gc,
}

fn key_of(k: u32) -> AccessKey {
    if k == 8 {
        AccessKey::NONE
    } else {
        AccessKey::new(0x10 + k)
    }
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        5 => (0u64..64, 0u32..9, any::<u8>()).prop_map(|(l, k, b)| Op::Write(l, k, b)),
        5 => (0u64..64, 0u32..9).prop_map(|(l, k)| Op::Read(l, k)),
        1 => Just(Op::Gc),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn variants_agree_with_oracle(ops in prop::collection::vec(op(), 1..300)) {
        let mut s = ftl(FtlVariant::KeyStatic);
        let mut d = ftl(FtlVariant::KeyDynamic);
        let mut o = OracleModel::new();
        for op in ops {
            match op {
                Op::Write(lpn, k, b) => {
                    let key = key_of(k);
                    let want = o.write(lpn, key, &page(b));
                    let want = if want { Verdict::Granted } else { Verdict::Denied };
                    prop_assert_eq!(s.handle_write(lpn, key, &page(b)).unwrap(), want);
                    prop_assert_eq!(d.handle_write(lpn, key, &page(b)).unwrap(), want);
                }
                Op::Read(lpn, k) => {
                    let key = key_of(k);
                    let want = match o.read(lpn, key) {
                        None => ReadOutcome::Denied,
                        Some(data) => ReadOutcome::Granted(
                            data.map(<[u8]>::to_vec).unwrap_or_else(|| page(0xFF)),
                        ),
                    };
                    let ds = s.key_state_digest();
                    prop_assert_eq!(&s.handle_read(lpn, key).unwrap(), &want);
                    prop_assert_eq!(&d.handle_read(lpn, key).unwrap(), &want);
                    prop_assert_eq!(s.key_state_digest(), ds);
                }
                Op::Gc => {
                    let _ = s.run_gc();
                    let _ = d.run_gc();
                }
            }
            s.admin_reset_lockout();
            d.admin_reset_lockout();
        }
    }

    #[test]
    fn denied_write_is_side_effect_free(
        lpn in 0u64..32, owner in 0u32..8, intruder in 0u32..9
    ) {
        prop_assume!(owner != intruder);
        for v in keyed() {
            let mut f = ftl(v);
            f.handle_write(lpn, key_of(owner), &page(1)).unwrap();
            let digest = f.state_digest();
            let counters = f.metrics().flash.programs;
            prop_assert_eq!(f.handle_write(lpn, key_of(intruder), &page(2)).unwrap(), Verdict::Denied);
            prop_assert_eq!(f.state_digest(), digest);
            prop_assert_eq!(f.metrics().flash.programs, counters);
            prop_assert_eq!(f.handle_read(lpn, key_of(owner)).unwrap(), ReadOutcome::Granted(page(1)));
        }
    }

    #[test]
    fn flush_modes_equivalent(ops in prop::collection::vec((0u64..256, 0u32..9), 1..120), split in 0usize..120) {
        let mut per_mode = Vec::new();
        for mode in [FlushMode::AllFlush, FlushMode::SelectiveFlush] {
            for v in keyed() {
                let mut f = ftl(v);
                let mut bytes = 0;
                for (i, (lpn, k)) in ops.iter().enumerate() {
                    f.handle_write(*lpn, key_of(*k), &page(*k as u8)).unwrap();
                    if i == split {
                        bytes += f.handle_flush(mode).unwrap();
                    }
                }
                bytes += f.handle_flush(mode).unwrap();
                f.power_cycle();
                f.recover().unwrap();
                let verdicts: Vec<Verdict> = (0..256u64)
                    .flat_map(|lpn| (0..9).map(move |k| (lpn, k)))
                    .map(|(lpn, k)| {
                        let r = f.handle_read(lpn, key_of(k)).unwrap().verdict();
                        f.admin_reset_lockout();
                        r
                    })
                    .collect();
                per_mode.push((mode, v, bytes, verdicts));
            }
        }
        let (_, _, af_s, ref vs_af) = per_mode[0];
        let (_, _, af_d, _) = per_mode[1];
        let (_, _, sf_s, ref vs_sf) = per_mode[2];
        let (_, _, sf_d, _) = per_mode[3];
        prop_assert_eq!(vs_af, vs_sf);
        prop_assert_eq!(vs_af, &per_mode[1].3);
        prop_assert_eq!(vs_af, &per_mode[3].3);
        prop_assert!(sf_s <= af_s);
        prop_assert!(sf_d <= af_d);
    }

    #[test]
    fn gc_is_transparent(writes in prop::collection::vec((0u64..128, 0u32..9), 1..200), gcs in 1usize..6) {
        let mut f = ftl(FtlVariant::KeyStatic);
        for (lpn, k) in &writes {
            f.handle_write(*lpn, key_of(*k), &page(*lpn as u8)).unwrap();
            f.admin_reset_lockout();
        }
        let probe = |f: &mut KeyFtl| -> Vec<ReadOutcome> {
            let mut v = Vec::new();
            for lpn in 0..128u64 {
                for k in 0..9 {
                    v.push(f.handle_read(lpn, key_of(k)).unwrap());
                    f.admin_reset_lockout();
                }
            }
            v
        };
        let before = probe(&mut f);
        for _ in 0..gcs {
            let _ = f.run_gc();
        }
        prop_assert_eq!(probe(&mut f), before);
    }
}
