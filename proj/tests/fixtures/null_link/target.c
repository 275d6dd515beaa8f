#include <stdio.h>
#include <stdlib.h>

struct record {
  long id;
  struct record *link;
  long weight;
};

long lookups;

__attribute__((noipa)) long linked_weight(const struct record *r) {
  lookups++;
#ifdef FIXED
  if (!r->link)
    return -1;
#endif
  return r->link->weight * 2 + r->id;
}

int main(int argc, char **argv) {
  if (argc < 3)
    return 1;
  struct record tail = {7, NULL, atol(argv[2])};
  struct record head = {atol(argv[1]), &tail, 0};
  long v = linked_weight(argc > 3 ? &tail : &head);
  printf("%ld %ld\n", v, lookups);
  return 0;
}
