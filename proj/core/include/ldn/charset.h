#pragma once

#include <array>
#include <string_view>

namespace ldn {

// The 62 editable symbols: digits, then upper case, then lower case.
inline constexpr int kNumSymbols = 62;
inline constexpr std::string_view kCharSet =
    "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz";
static_assert(kCharSet.size() == kNumSymbols);

bool in_charset(char ch);

// Position of `ch` in kCharSet. Throws DomainError naming the symbol.
int char_index(char ch);
char char_at(int index);

// Throws DomainError on the first symbol outside the set or on empty text.
void validate_text(std::string_view text);

}  // namespace ldn
