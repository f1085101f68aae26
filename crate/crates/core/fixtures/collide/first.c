static int helper(int x)
{
    return x + 1;
}

int first_entry(int x)
{
    return helper(x);
}
