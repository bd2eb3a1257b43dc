//! Single-block digest throughput: the cost that dominates a full
//! address-space scan.

use criterion::{criterion_group, criterion_main, Criterion, Throughput};
use hashslice_core::hash::{slice_value, BlockKernel, HashKind, SingleBlock};
use std::hint::black_box;

fn digest_throughput(c: &mut Criterion) {
    let mut group = c.benchmark_group("single_block");
    const BATCH: u64 = 4096;
    group.throughput(Throughput::Elements(BATCH));

    for (name, kernel) in [
        ("sha1", BlockKernel::new(HashKind::Sha1)),
        ("sha1_portable", BlockKernel::portable(HashKind::Sha1)),
        ("sha256", BlockKernel::new(HashKind::Sha256)),
    ] {
        group.bench_function(name, |b| {
            let mut block = SingleBlock::with_prefix(b"227259").unwrap();
            let mut addr = 0u32;
            b.iter(|| {
                let mut acc = 0u64;
                for _ in 0..BATCH {
                    addr = addr.wrapping_add(1);
                    block.set_address(addr);
                    let digest = kernel.digest(black_box(&block));
                    acc = acc.wrapping_add(slice_value(&digest, 9, 4) as u64);
                }
                acc
            });
        });
    }

    group.bench_function("sha1_paired", |b| {
        let kernel = BlockKernel::new(HashKind::Sha1);
        let mut b0 = SingleBlock::with_prefix(b"227259").unwrap();
        let mut b1 = b0.clone();
        let mut addr = 0u32;
        b.iter(|| {
            let mut acc = 0u64;
            for _ in 0..BATCH / 2 {
                addr = addr.wrapping_add(2);
                b0.set_address(addr);
                b1.set_address(addr + 1);
                let (d0, d1) = kernel.digest_pair(black_box(&b0), black_box(&b1));
                acc = acc.wrapping_add(slice_value(&d0, 9, 4) as u64);
                acc = acc.wrapping_add(slice_value(&d1, 9, 4) as u64);
            }
            acc
        });
    });
    group.finish();
}

criterion_group!(benches, digest_throughput);
criterion_main!(benches);
