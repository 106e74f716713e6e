#include <iostream>

int main() {
    std::cout << "fabulight cli placeholder\n";
    return 0;
}
