#include <stdio.h>

int first_entry(int x);
int second_entry(int x);

int main(void)
{
    printf("%d %d\n", first_entry(1), second_entry(2));
    return 0;
}
