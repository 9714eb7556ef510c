#include <cstdio>

int main() {
    std::puts("pelfa: CLI under construction");
    return 0;
}
