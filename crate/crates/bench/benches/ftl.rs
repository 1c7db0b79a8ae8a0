use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use keyssd_bench::{populated, OWNER};
use keyssd_core::{AccessKey, FtlVariant};
use std::hint::black_box;

const PAGES: u64 = 1024;

fn access(c: &mut Criterion) {
    let mut g = c.benchmark_group("ftl");
    for v in [
        FtlVariant::Baseline,
        FtlVariant::KeyStatic,
        FtlVariant::KeyDynamic,
    ] {
        g.bench_with_input(BenchmarkId::new("read-granted", v.name()), &v, |b, &v| {
            let mut f = populated(v, PAGES);
            let mut lpn = 0;
            b.iter(|| {
                lpn = (lpn + 7) % PAGES;
                f.handle_read(black_box(lpn), OWNER).unwrap()
            })
        });
        g.bench_with_input(BenchmarkId::new("read-denied", v.name()), &v, |b, &v| {
            let mut f = populated(v, PAGES);
            let mut lpn = 0;
            b.iter(|| {
                lpn = (lpn + 7) % PAGES;
                f.handle_read(black_box(lpn), AccessKey::new(0x99)).unwrap()
            })
        });
        g.bench_with_input(BenchmarkId::new("update-write", v.name()), &v, |b, &v| {
            let mut f = populated(v, PAGES);
            let page = vec![0x5a; f.geometry().host_page_bytes as usize];
            let mut lpn = 0;
            b.iter(|| {
                lpn = (lpn + 7) % PAGES;
                f.handle_write(black_box(lpn), OWNER, &page).unwrap()
            })
        });
    }
    g.finish();
}

criterion_group!(benches, access);
criterion_main!(benches);
