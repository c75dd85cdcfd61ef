#pragma once
// Process-level setup shared by the command-line tool and test drivers.

namespace dspo {

// Keeps large tensor buffers on the heap instead of fresh mmap regions, which
// otherwise dominate runtime through page faults. No-op outside glibc.
void tune_allocator();

}  // namespace dspo
