#include <cstdio>

int main() {
    std::puts("tomoprior: CLI not wired yet");
    return 0;
}
