//! Builds a small expression on the tape, reads its gradients and compares
//! them with central differences.
//!
//! ```sh
//! cargo run --example autograd_gradcheck
//! ```

use textlab::gradcheck::check_function;
use textlab::tensor::{Tape, Tensor, TensorError};

fn main() -> Result<(), TensorError> {
    let a = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0])?;
    let b = Tensor::new(vec![2, 2], vec![5.0, 6.0, 7.0, 8.0])?;

    let tape = Tape::new();
    let (x, y) = (tape.leaf(a.clone()), tape.leaf(b.clone()));
    let product = x.matmul(y)?;
    println!("a . b = {:?}", product.value().data());
    let grads = tape.backward(product.scale(0.1).tanh().sum())?;
    println!("d/da sum(tanh(0.1 a . b)) = {:?}", grads.wrt(x).expect("a is used").data());

    let check = check_function(|v| Ok(v[0].matmul(v[1])?.scale(0.1).tanh().sum()), &[a, b])?;
    println!("{} coordinates checked, max relative error {:.2e} at {}", check.checked, check.max_relative_error, check.worst);
    Ok(())
}
