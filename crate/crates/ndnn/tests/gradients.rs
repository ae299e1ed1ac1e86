use ndnn::gradcheck::{check_all, check_stack};

#[test]
fn every_op_passes_in_32_bit() {
    for seed in [1, 2] {
        for r in check_all::<f32>(seed).unwrap() {
            println!("f32 {:<14} rel {:.3e} ({} coords)", r.op, r.rel_error, r.coordinates);
            assert!(r.rel_error < 1e-4, "{} rel error {}", r.op, r.rel_error);
        }
    }
}

#[test]
fn every_op_passes_in_64_bit() {
    for seed in [1, 2] {
        for r in check_all::<f64>(seed).unwrap() {
            println!("f64 {:<14} rel {:.3e} ({} coords)", r.op, r.rel_error, r.coordinates);
            assert!(r.rel_error < 1e-7, "{} rel error {}", r.op, r.rel_error);
        }
    }
}

#[test]
fn composite_stack_passes_in_64_bit() {
    for seed in 0..4 {
        let r = check_stack::<f64>(seed).unwrap();
        assert!(r.rel_error < 1e-7, "stack rel error {}", r.rel_error);
    }
}
