#![no_main]

use adjoint_pde_core::sparse::{lu_factorize, CsrMatrix};
use libfuzzer_sys::fuzz_target;

// first byte is the order, then (row, col, value) records of 1+1+8 bytes
fuzz_target!(|data: &[u8]| {
    let Some((&n, rest)) = data.split_first() else { return };
    let n = (n as usize % 16) + 1;
    let triplets: Vec<(usize, usize, f64)> = rest
        .chunks_exact(10)
        .map(|c| {
            let v = f64::from_le_bytes(c[2..10].try_into().unwrap());
            (c[0] as usize, c[1] as usize, v)
        })
        .collect();
    let Ok(a) = CsrMatrix::from_triplets(n, &triplets) else { return };
    let Ok(lu) = lu_factorize(&a) else { return };
    let b = vec![1.0; n];
    let _ = lu.solve(&b);
    let _ = lu.solve_transpose(&b);
});
