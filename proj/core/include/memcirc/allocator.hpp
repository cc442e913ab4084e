#pragma once

namespace memcirc {

// Keeps freed heap memory in the process instead of returning it to the OS.
// Training allocates and frees megabyte-sized tensors every step; with the
// default glibc thresholds each of them costs fresh page faults. No-op on
// other C libraries. Call once at startup, before any large allocation.
void retain_freed_memory();

}  // namespace memcirc
