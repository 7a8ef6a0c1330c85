from parallel import coreid, recv, send

data=[]
datalen=0
if coreid==0:
  datalen=recv(16)
  data=recv(16, datalen)
parallel_odd_even_sort(data)
if coreid==0:
  send(data, 16, len(data))
