#include <cstdio>

int main() {
    std::printf("cli placeholder\n");
    return 0;
}
