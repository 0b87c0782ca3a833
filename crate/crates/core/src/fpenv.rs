//! Scoped flush-to-zero for f32 training and inference.
//!
//! Saturated softmax and tanh units push gradients into the subnormal range,
//! where x86 arithmetic runs many times slower. The guard sets the SSE
//! flush-to-zero and denormals-are-zero bits for the current thread and
//! restores the previous control word on drop. Elsewhere it does nothing.

#[cfg(target_arch = "x86_64")]
mod imp {
    use std::arch::asm;

    const FTZ_DAZ: u32 = 0x8040;

    fn get() -> u32 {
        let mut csr = 0u32;
        // SAFETY: stmxcsr only stores the control word into `csr`.
        unsafe { asm!("stmxcsr [{}]", in(reg) &mut csr, options(nostack)) };
        csr
    }

    fn set(csr: u32) {
        // SAFETY: the value is a previously read control word with at most
        // the FTZ and DAZ bits added, both of which are valid to set.
        unsafe { asm!("ldmxcsr [{}]", in(reg) &csr, options(nostack, readonly)) };
    }

    pub struct FlushDenormals {
        saved: u32,
    }

    impl FlushDenormals {
        pub fn new() -> Self {
            let saved = get();
            set(saved | FTZ_DAZ);
            FlushDenormals { saved }
        }
    }

    impl Drop for FlushDenormals {
        fn drop(&mut self) {
            set(self.saved);
        }
    }
}

#[cfg(not(target_arch = "x86_64"))]
mod imp {
    pub struct FlushDenormals;

    impl FlushDenormals {
        pub fn new() -> Self {
            FlushDenormals
        }
    }
}

pub use imp::FlushDenormals;

impl Default for FlushDenormals {
    fn default() -> Self {
        Self::new()
    }
}
