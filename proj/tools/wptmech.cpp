#include "wptmech/wptmech.hpp"
int main() { return 0; }
