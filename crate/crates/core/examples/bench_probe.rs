// quick throughput probe for batched forward/backward
use genclass::numeric::{MlpParams, RngStream};

fn main() {
    let mut s = RngStream::new(1).derive(0);
    let params = MlpParams::init(3096, &[256, 256], 3072, &mut s);
    for &batch in &[8usize, 32, 128] {
        let x = s.sample_gaussian(&[batch, 3096]);
        let t0 = std::time::Instant::now();
        let iters = 20;
        for _ in 0..iters {
            let tr = genclass::numeric::test_support::forward_batch_probe(&params, x.data(), batch);
            std::hint::black_box(tr);
        }
        let dt = t0.elapsed().as_secs_f64();
        let flops = 2.0 * (3096.0 * 256.0 + 256.0 * 256.0 + 256.0 * 3072.0)
            * (batch * iters) as f64;
        println!(
            "batch {batch}: fwd {:.2} ms/batch, {:.2} Gflop/s",
            dt * 1000.0 / iters as f64,
            flops / dt / 1e9
        );
    }
}
