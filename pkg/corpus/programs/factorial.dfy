// Mathematical factorial of 'n'.
ghost function Fact(n: nat): nat
{
  if n == 0 then 1 else n * Fact(n - 1)
}

// Shows factorials are at least one.
lemma FactPositive(n: nat)
  ensures Fact(n) >= 1
{
  if n != 0 {
    FactPositive(n - 1);
  }
}

// Iteratively computes the factorial of 'n'.
method Factorial(n: nat) returns (f: nat)
  ensures f == Fact(n)
  ensures f >= 1
{
  f := 1;
  var i := 0;
  while i < n
    invariant 0 <= i <= n
    invariant f == Fact(i)
    decreases n - i
  {
    i := i + 1;
    f := f * i;
  }
  FactPositive(n); // helper
}

method TestFactorial()
{
  var f := Factorial(4);
  assert f == 24;
  var g := Factorial(0);
  assert g == 1;
}
