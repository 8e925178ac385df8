#include "ldn/charset.h"

#include <string>

#include "ldn/error.h"

namespace ldn {

bool in_charset(char ch) {
  return (ch >= '0' && ch <= '9') || (ch >= 'A' && ch <= 'Z') ||
         (ch >= 'a' && ch <= 'z');
}

int char_index(char ch) {
  if (ch >= '0' && ch <= '9') return ch - '0';
  if (ch >= 'A' && ch <= 'Z') return 10 + (ch - 'A');
  if (ch >= 'a' && ch <= 'z') return 36 + (ch - 'a');
  throw DomainError("symbol '" + std::string(1, ch) +
                    "' is not in the 62-symbol character set");
}

char char_at(int index) {
  if (index < 0 || index >= kNumSymbols) {
    throw DomainError("character index " + std::to_string(index) +
                      " outside [0,61]");
  }
  return kCharSet[index];
}

void validate_text(std::string_view text) {
  if (text.empty()) throw DomainError("text is empty");
  for (char ch : text) char_index(ch);
}

}  // namespace ldn
