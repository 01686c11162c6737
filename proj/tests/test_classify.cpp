#include <catch2/catch_amalgamated.hpp>
TEST_CASE("placeholder test_classify") { SUCCEED(); }
